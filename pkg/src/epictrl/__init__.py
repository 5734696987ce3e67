"""Testing-augmented SIR economy with behavioral agents and optimal lockdown."""
