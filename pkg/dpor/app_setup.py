import logging

from rich.console import Console
from rich.logging import RichHandler

# Create the single, shared console (stderr keeps stdout free for data)
console = Console(stderr=True)


def configure_logging(verbose: bool = False) -> None:
    """Route package logging through the shared console."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(name)s: %(message)s",
        handlers=[RichHandler(console=console, show_path=False, show_time=False)],
        force=True,
    )
