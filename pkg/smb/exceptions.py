"""
Runtime failures raised while simulating or scoring a process.

Invalid inputs (configs, parameter blocks) raise Django's `ValidationError`
instead; everything here signals that a valid problem could not be carried
through.
"""


class SimulationError(Exception):
    """ Base class for all simulation failures. """


class IntegrationError(SimulationError):
    """ The column integrator could not advance the state. """
    def __init__(self, message, time_reached=None, column=None, switch=None):
        self.message = message
        self.time_reached = time_reached
        self.column = column
        self.switch = switch
        super().__init__(message)

    def tagged(self, column, switch):
        """ Copy of this error naming the column and switch it occurred in. """
        return IntegrationError(self.message, self.time_reached, column, switch)

    def __str__(self):
        msg = self.message
        context = []
        if self.time_reached is not None:
            context.append("t={:g} s".format(self.time_reached))
        if self.column is not None:
            context.append("column {}".format(self.column))
        if self.switch is not None:
            context.append("switch {}".format(self.switch))
        return "{} ({})".format(msg, ", ".join(context)) if context else msg


class CapacityError(SimulationError):
    """ Bound proteins exceed the ionic capacity (negative free ligand). """


class FlowBalanceError(SimulationError):
    """ Flowrates at a node or around a loop don't balance. """


class EmptyPoolWindow(SimulationError):
    """ No part of the chromatogram satisfies the pooling criterion. """


class NoWithdrawal(SimulationError):
    """ No protein mass left through the node (purity undefined). """


class NoFeed(SimulationError):
    """ No protein mass entered the process (yield undefined). """


class GridMismatch(SimulationError):
    """ Outlet records compared on different time grids. """
