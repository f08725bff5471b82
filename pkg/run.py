"""workflowaug — Entry point."""

from workflowaug.cli import cli

if __name__ == "__main__":
    cli()
