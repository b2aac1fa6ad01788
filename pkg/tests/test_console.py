#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import io
import math

import numpy as np
import pytest

from bfcal import console
from bfcal.console import echo, fmt, format_table, ljust, paint, Palette, print_checks, print_power, rjust, strip_ansi
from bfcal.stats import CheckReport
from bfcal.typ import MissingColorError


class TestPalette:

    def test_packaged_roles(self):
        for role in console.ROLES:
            assert isinstance(Palette().get(role), int)

    def test_alt_colors(self, alt_colors_ini):
        assert Palette().get("pass") == 195
        assert Palette()._colors_ini_path == alt_colors_ini

    def test_missing_role(self, alt_colors_ini):
        with pytest.raises(MissingColorError):
            Palette().get("header")

    def test_default_is_zero(self):
        assert Palette().get("default") == 0


class TestPaint:

    def test_codes(self, alt_colors_ini):
        assert paint("ok", "pass") == "\x1b[38;5;195mok\x1b[0m"

    def test_bold(self, alt_colors_ini):
        assert paint("ok", "pass", bold=True) == "\x1b[1m\x1b[38;5;195mok\x1b[0m"

    def test_plaintext(self):
        assert paint("ok", "reject", plaintext=True) == "ok"

    def test_strip_ansi(self, alt_colors_ini):
        assert strip_ansi(paint("ok", "reject", bold=True)) == "ok"

    def test_justify_ignores_codes(self, alt_colors_ini):
        s = paint("ab", "pass")
        assert strip_ansi(ljust(s, 5)) == "ab   "
        assert strip_ansi(rjust(s, 5)) == "   ab"
        assert ljust("abcdef", 3) == "abcdef"


class TestFmt:

    @pytest.mark.parametrize(
        "value, expected",
        [
            (None, "-"),
            (math.nan, "-"),
            (True, "yes"),
            (False, "no"),
            (12, "12"),
            (np.int64(7), "7"),
            (0.123456, "0.1235"),
            (np.float64(1234.5678), "1235"),
            (1e-7, "1e-07"),
            ("dap", "dap"),
        ],
    )
    def test_fmt(self, value, expected):
        assert fmt(value) == expected


class TestTables:

    def test_alignment(self):
        lines = format_table(["name", "n"], [["t", 10], ["gaffke", 5]], plaintext=True)
        assert lines == ["name    n ", "t       10", "gaffke   5"]

    def test_roles_paint_rows(self):
        lines = format_table(["name"], [["a"], ["b"]], roles=[None, "reject"])
        code = Palette().get("reject")
        assert lines[1] == "a   "
        assert lines[2] == f"\x1b[38;5;{code}mb   \x1b[0m"
        assert strip_ansi(lines[0]) == "name"

    def test_print_checks(self):
        reports = [
            CheckReport("dap", 0.51, 0.42, "pass", 200, {"ci_low": 0.45, "ci_high": 0.57}),
            CheckReport("miscalibration", 0.04, 0.001, "reject", 200, {"mcb": 0.04, "q95": 0.01}),
            CheckReport("sbc:model_index", 1.2, 1.0, "pass", 200, {"sensitivity": 0.07}),
        ]
        out = io.StringIO()
        print_checks(reports, file=out, plaintext=True)
        lines = out.getvalue().splitlines()
        assert len(lines) == 4
        assert lines[0].split() == ["check", "statistic", "p", "/", "threshold", "sims", "decision", "detail"]
        assert "CI [0.45, 0.57]" in lines[1]
        assert "mcb 0.04, q95 0.01" in lines[2]
        assert "reject" in lines[2]
        assert "sens. 0.07" in lines[3]

    def test_print_power(self):
        out = io.StringIO()
        print_power({"sbc:model_index": 40, "dap": None}, file=out, plaintext=True)
        lines = out.getvalue().splitlines()
        assert lines[1].split() == ["sbc:model_index", "40"]
        assert lines[2].split() == ["dap", "-"]

    def test_non_tty_is_plaintext(self):
        out = io.StringIO()
        print_power({"dap": 10}, file=out)
        assert "\x1b" not in out.getvalue()


class TestEcho:

    def test_prints(self, capsys):
        echo("hello")
        assert capsys.readouterr().out == "hello\n"

    def test_stealth(self, capsys, monkeypatch):
        monkeypatch.setattr(console.C, "STEALTH", True)
        echo("hidden")
        echo("seed: 4", force=True)
        assert capsys.readouterr().out == "seed: 4\n"

    def test_error_goes_to_stderr(self, capsys, monkeypatch):
        monkeypatch.setattr(console.C, "STEALTH", True)
        console.error("bad", plaintext=True)
        captured = capsys.readouterr()
        assert captured.out == ""
        assert captured.err == "error: bad\n"
