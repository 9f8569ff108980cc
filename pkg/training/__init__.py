# Classifier and penalized training module
