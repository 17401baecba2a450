"""
Entry point for running the package as a module.
Usage: python -m hyperlap <command> ...
"""

from hyperlap.cli import main

if __name__ == "__main__":
    main()
