"""Neural-symbolic repair harness for RTL designs."""

__version__ = "0.1.0"
