# Propensity and potential-outcome estimation module
