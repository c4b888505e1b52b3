"""Extrapolating multi-stream longitudinal data with FPCA and Gaussian-process score priors."""
