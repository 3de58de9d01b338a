"""xbarcli — design-space exploration for analog in-memory-computing crossbars."""

__version__ = "0.1.0"
__author__ = "ClawInfra"
__license__ = "MIT"
