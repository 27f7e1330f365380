"""Entry point for `python -m src`."""

from .cli.main import main

if __name__ == "__main__":
    main()
