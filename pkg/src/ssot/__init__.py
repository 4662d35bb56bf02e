"""Single-shot thermodynamics, deterministic heat engines and their asymptotics."""
