"""
Shared rich console, logging setup and table rendering
"""

import logging
from typing import Any, Dict, Iterable, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

console = Console()
err_console = Console(stderr=True)


def setup_logging(level: str = "INFO") -> logging.Logger:
    """Install a RichHandler on the negmm logger (idempotent)"""
    logger = logging.getLogger("negmm")
    logger.setLevel(level.upper())
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def records_table(
    title: str,
    rows: Iterable[Dict[str, Any]],
    columns: Optional[Sequence[str]] = None,
    highlight: Optional[str] = None,
) -> Table:
    """Render a list of flat records; rows whose `highlight` key is truthy are marked"""
    rows = list(rows)
    if columns is None:
        columns = list(dict.fromkeys(k for row in rows for k in row))
    table = Table(title=title)
    for col in columns:
        table.add_column(col, style="cyan" if col == columns[0] else None)
    for row in rows:
        style = "bold green" if highlight and row.get(highlight) else None
        table.add_row(*(_cell(row.get(col, "")) for col in columns), style=style)
    return table


def print_table(title: str, rows: Iterable[Dict[str, Any]], **kwargs: Any) -> None:
    console.print(records_table(title, rows, **kwargs))


def success(message: str) -> None:
    console.print(f"[green]✅ {message}[/green]")


def failure(message: str) -> None:
    err_console.print(f"[red]❌ {message}[/red]")
