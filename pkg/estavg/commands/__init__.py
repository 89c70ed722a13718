from estavg.commands.simulate_commands import simulate_command
from estavg.commands.fit_commands import fit_command, average_command
from estavg.commands.experiment_commands import experiment_command

__all__ = ["simulate_command", "fit_command", "average_command", "experiment_command"]
