"""Random variate generation: counter-based streams and Polya-Gamma draws."""
