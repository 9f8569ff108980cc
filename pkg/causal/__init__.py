# Causal graph and structural equation model module
