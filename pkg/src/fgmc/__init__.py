"""Monte Carlo and exact partition functions of grid factor graphs with signed or complex factors."""
