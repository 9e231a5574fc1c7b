"""Reference-incentive NFT pricing: simulation, learning and analysis."""
