"""Random walks in random environments: exact 1D analytics and Monte Carlo."""
