"""Run the command-line front end with ``python -m ddmimo``."""

from .cli import main

main()
