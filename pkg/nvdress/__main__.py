"""Module entry point for the nvdress CLI."""

from nvdress.cli import main

if __name__ == "__main__":
    exit(main())
