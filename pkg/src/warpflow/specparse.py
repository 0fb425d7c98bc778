"""Parser for manifold strings.

Grammar::

    spec    := "circle"
             | "sphere:d=" INT [",r=" NUM ("," NUM)*]
             | "ring:d=" INT "," ("logh" | "h") "=" group (";" group)*
    group   := NUM ["," NUM]

``r`` lists polynomial coefficients of the sphere deformation; ``logh``
(or ``h``) lists Fourier coefficients ``a0; a1,b1; a2,b2; ...`` of log h
(or of h itself).
"""

from __future__ import annotations

import re

from .geometry import CIRCLE, RING, SPHERE, ProfileSpec

_NUM = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_INT = re.compile(r"\d+")


class SpecParseError(ValueError):
    def __init__(self, text: str, pos: int, expected: str):
        self.text, self.pos, self.expected = text, pos, expected
        found = repr(text[pos:pos + 10]) if pos < len(text) else "end of input"
        super().__init__(f"at position {pos}: expected {expected}, found {found}\n"
                         f"  {text}\n  {' ' * pos}^")


class _Cursor:
    def __init__(self, text: str):
        self.text, self.pos = text, 0

    def literal(self, s: str) -> None:
        if not self.text.startswith(s, self.pos):
            raise SpecParseError(self.text, self.pos, repr(s))
        self.pos += len(s)

    def peek(self, s: str) -> bool:
        return self.text.startswith(s, self.pos)

    def match(self, pattern: re.Pattern, what: str) -> str:
        mt = pattern.match(self.text, self.pos)
        if not mt:
            raise SpecParseError(self.text, self.pos, what)
        self.pos = mt.end()
        return mt.group(0)

    def end(self) -> None:
        if self.pos != len(self.text):
            raise SpecParseError(self.text, self.pos, "end of input")


def parse_manifold(text: str, grid: int = 256) -> ProfileSpec:
    text = text.strip()
    cur = _Cursor(text)
    if cur.peek(CIRCLE):
        cur.literal(CIRCLE)
        cur.end()
        return ProfileSpec(CIRCLE, 1, (), grid)
    if cur.peek(SPHERE):
        cur.literal(SPHERE + ":d=")
        d = int(cur.match(_INT, "integer dimension"))
        coeffs = []
        if cur.peek(","):
            cur.literal(",r=")
            coeffs.append(float(cur.match(_NUM, "number")))
            while cur.peek(","):
                cur.literal(",")
                coeffs.append(float(cur.match(_NUM, "number")))
        cur.end()
        return ProfileSpec(SPHERE, d, tuple(coeffs), grid)
    if cur.peek(RING):
        cur.literal(RING + ":d=")
        d = int(cur.match(_INT, "integer dimension"))
        cur.literal(",")
        if cur.peek("logh="):
            cur.literal("logh=")
            form = "log"
        elif cur.peek("h="):
            cur.literal("h=")
            form = "linear"
        else:
            raise SpecParseError(text, cur.pos, "'logh=' or 'h='")
        coeffs = [float(cur.match(_NUM, "number (a0)"))]
        while cur.peek(";"):
            cur.literal(";")
            a = float(cur.match(_NUM, "number (cosine coefficient)"))
            b = 0.0
            if cur.peek(","):
                cur.literal(",")
                b = float(cur.match(_NUM, "number (sine coefficient)"))
            coeffs += [a, b]
        cur.end()
        return ProfileSpec(RING, d, tuple(coeffs), grid, form)
    raise SpecParseError(text, 0, "'sphere:', 'ring:' or 'circle'")
