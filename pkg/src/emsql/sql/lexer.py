"""Tokenizer for the dialect: case-insensitive keywords, ``--`` comments."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError

KEYWORDS = frozenset(
    """
    with as select from where group by union all update computed maxrecursion
    over partition and or not values
    """.split()
)

_SYMBOLS = ("<>", "!=", "<=", ">=", "(", ")", ",", ".", "*", "/", "+", "-", "=", "<", ">", ";")


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, int, real, string, symbol, eof
    value: object
    line: int
    column: int
    text: str = ""

    @property
    def pos(self) -> tuple[int, int]:
        return (self.line, self.column)


def tokenize(src: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def advance(k: int):
        nonlocal i, line, col
        for ch in src[i : i + k]:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        i += k

    while i < n:
        ch = src[i]
        if ch.isspace():
            advance(1)
            continue
        if src.startswith("--", i):
            j = src.find("\n", i)
            advance((j if j >= 0 else n) - i)
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            low = word.lower()
            kind = "keyword" if low in KEYWORDS else "ident"
            tokens.append(Token(kind, low, start_line, start_col, word))
            advance(j - i)
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and src[j].isdigit():
                j += 1
            is_real = False
            if j < n and src[j] == "." and not (j + 1 < n and src[j + 1].isalpha()):
                is_real = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    is_real = True
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            value = float(text) if is_real else int(text)
            tokens.append(Token("real" if is_real else "int", value, start_line, start_col, text))
            advance(j - i)
            continue
        if ch == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", start_line, start_col)
                if src[j] == "'":
                    if j + 1 < n and src[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(src[j])
                j += 1
            tokens.append(Token("string", "".join(buf), start_line, start_col, src[i : j + 1]))
            advance(j + 1 - i)
            continue
        for sym in _SYMBOLS:
            if src.startswith(sym, i):
                tokens.append(Token("symbol", "<>" if sym == "!=" else sym, start_line, start_col, sym))
                advance(len(sym))
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(Token("eof", None, line, col, ""))
    return tokens
