#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Human-facing console output: colored summary tables for checks, histories and
test tables.

Env: These environment variables, when set, affect output globally.
    BFCAL_STEALTH: Hides all console output. Can be overridden by 'force'.
    BFCAL_PLAINTEXT: Prints all output in plaintext.
"""

import configparser
import math
import numbers
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union

from . import constants as C
from .config import _check_path
from .typ import MissingColorError

ROLES = ("pass", "reject", "header", "muted", "error", "warning")

colors_ini = configparser.ConfigParser()


class Palette:
    """Maps console roles to 256-color ANSI codes.

    Colors are loaded once per process from colors.ini. Change the codes there, or
    point Palette at another file, to restyle the output.
    """

    _initialized = False
    _colors_ini_path: Optional[Path] = None
    _color_dict: Dict[str, int] = {}

    def __init__(self, path: Optional[Union[str, Path]] = None):
        if not Palette._initialized:
            path = _check_path(path, "colors.ini")
            Palette.load_colors(path)
            Palette._colors_ini_path = path
            Palette._initialized = True

    @classmethod
    def load_colors(cls, path: Union[str, Path]):
        colors_ini["colors"] = {}
        colors_ini.read(path)
        cls._color_dict = {k: int(v) for (k, v) in colors_ini["colors"].items()}

    @classmethod
    def reset(cls):
        cls._initialized = False
        cls._colors_ini_path = None
        cls._color_dict = {}

    def get(self, role: str) -> int:
        """Returns the ANSI code for a role.

        Raises:
            MissingColorError: if the role is not in colors.ini.
        """
        if role == "default":
            return 0
        if role not in self._color_dict:
            raise MissingColorError(f"Role '{role}' not found in colors.ini.")
        return self._color_dict[role]


def _use_plaintext(plaintext: Optional[bool], file: Optional[TextIO]) -> bool:
    if plaintext is not None:
        return plaintext
    return C.PLAINTEXT or not getattr(file or sys.stdout, "isatty", lambda: False)()


def paint(text: str, role: str, plaintext: bool = False, bold: bool = False) -> str:
    """Wraps `text` in the ANSI codes for `role`."""
    if plaintext:
        return text
    code = Palette().get(role)
    prefix = C.ANSI_BOLD if bold else ""
    color = f"\x1b[38;5;{code}m" if code else ""
    return f"{prefix}{color}{text}{C.ANSI_RESET}"


def strip_ansi(s: str) -> str:
    """Strips ANSI escape codes from a string, converting a styled string into plaintext."""
    return re.sub(r"\x1B(?:[@-Z\\-_]|\[[0-?]*[ -/]*[@-~])", "", s)


def ljust(s: str, width: int, fillchar: str = " ") -> str:
    """Left justifies in a field of `width`, accounting for ansi formatting."""
    return f"{s}{fillchar * (width - len(strip_ansi(s)))}"


def rjust(s: str, width: int, fillchar: str = " ") -> str:
    """Right justifies in a field of `width`, accounting for ansi formatting."""
    return f"{fillchar * (width - len(strip_ansi(s)))}{s}"


def fmt(value: Any) -> str:
    """4 significant digits for floats, '-' for missing values."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return "-" if math.isnan(value) else f"{float(value):.4g}"
    return str(value)


def echo(*values: Any, file: Optional[TextIO] = None, force: bool = False):
    """Prints unless BFCAL_STEALTH is set; `force` prints regardless."""
    if C.STEALTH and not force:
        return
    print(*values, file=file)


def format_table(
    header: Sequence[str], rows: Sequence[Sequence[Any]], roles: Optional[Sequence[Optional[str]]] = None, plaintext: bool = False
) -> List[str]:
    """Aligns `rows` under `header`. Numbers are right justified; `roles` paints whole rows."""
    cells = [[fmt(v) for v in row] for row in rows]
    widths = [max([len(h), *(len(r[k]) for r in cells)]) for k, h in enumerate(header)]
    numeric = [all(isinstance(row[k], numbers.Real) or row[k] is None for row in rows) for k in range(len(header))]

    lines = ["  ".join(paint(ljust(h, w), "header", plaintext, bold=True) for h, w in zip(header, widths))]
    for k, row in enumerate(cells):
        line = "  ".join(rjust(v, w) if numeric[j] else ljust(v, w) for j, (v, w) in enumerate(zip(row, widths)))
        role = roles[k] if roles else None
        lines.append(paint(line, role, plaintext) if role else line)
    return lines


def print_table(
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
    roles: Optional[Sequence[Optional[str]]] = None,
    file: Optional[TextIO] = None,
    plaintext: Optional[bool] = None,
):
    for line in format_table(header, rows, roles, _use_plaintext(plaintext, file)):
        echo(line, file=file)


def print_checks(reports: Sequence[Any], file: Optional[TextIO] = None, plaintext: Optional[bool] = None):
    """Summary of a check battery: one row per `stats.CheckReport`, with the extras
    that size each check (DAP CI, MCB and its null quantile, SBC sensitivity).
    """
    rows, roles = [], []
    for r in reports:
        ex = r.extras
        if "ci_low" in ex:
            detail = f"CI [{fmt(ex['ci_low'])}, {fmt(ex['ci_high'])}]"
        elif "mcb" in ex:
            detail = f"mcb {fmt(ex['mcb'])}, q95 {fmt(ex.get('q95'))}"
        elif "sensitivity" in ex:
            detail = f"sens. {fmt(ex['sensitivity'])}"
        elif "lower" in ex:
            detail = f"lower {fmt(ex['lower'])}"
        else:
            detail = ""
        if ex.get("fallback"):
            detail = f"{detail} (gaffke fallback)".strip()
        rows.append([r.check_name, float(r.statistic), float(r.threshold_or_pvalue), r.n_sims_used, r.decision, detail])
        roles.append("reject" if r.rejected else "pass")
    print_table(["check", "statistic", "p / threshold", "sims", "decision", "detail"], rows, roles, file, plaintext)


def print_power(summary: Dict[str, Optional[int]], file: Optional[TextIO] = None, plaintext: Optional[bool] = None):
    """First number of simulations at which each check reaches 80% power."""
    rows = [[check, first] for check, first in summary.items()]
    roles = ["reject" if first is not None else "muted" for first in summary.values()]
    print_table(["check", "first 80% power"], rows, roles, file, plaintext)


def error(message: str, file: Optional[TextIO] = None, plaintext: Optional[bool] = None):
    file = file or sys.stderr
    echo(paint(f"error: {message}", "error", _use_plaintext(plaintext, file)), file=file, force=True)
