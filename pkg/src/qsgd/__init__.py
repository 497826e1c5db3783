"""Shadow-gradient training of parameterized quantum classifiers, with baselines and exhaustive oracles."""
