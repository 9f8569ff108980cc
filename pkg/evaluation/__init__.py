# Fairness report and plotting module
