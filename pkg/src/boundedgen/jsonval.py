"""Minimal JSON value parser for structural output comparison.

Whitespace-insensitive, objects become dicts (duplicate keys: last wins),
arrays become lists, integral numbers become int and the rest float.  Only
what structural equality needs; no streaming, no extensions.
"""

from __future__ import annotations


class JsonValueError(ValueError):
    pass


_WS = b" \t\n\r"
_ESCAPES = {
    ord('"'): '"',
    ord("\\"): "\\",
    ord("/"): "/",
    ord("b"): "\b",
    ord("f"): "\f",
    ord("n"): "\n",
    ord("r"): "\r",
    ord("t"): "\t",
}


class _Parser:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def error(self, message: str) -> JsonValueError:
        return JsonValueError(f"{message} at offset {self.pos}")

    def skip_ws(self) -> None:
        while self.pos < len(self.data) and self.data[self.pos] in _WS:
            self.pos += 1

    def parse(self):
        self.skip_ws()
        value = self.parse_value()
        self.skip_ws()
        if self.pos != len(self.data):
            raise self.error("trailing content")
        return value

    def parse_value(self):
        if self.pos >= len(self.data):
            raise self.error("unexpected end of input")
        b = self.data[self.pos]
        if b == ord("{"):
            return self.parse_object()
        if b == ord("["):
            return self.parse_array()
        if b == ord('"'):
            return self.parse_string()
        for literal, value in ((b"true", True), (b"false", False), (b"null", None)):
            if self.data.startswith(literal, self.pos):
                self.pos += len(literal)
                return value
        return self.parse_number()

    def expect(self, ch: bytes) -> None:
        if not self.data.startswith(ch, self.pos):
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def parse_object(self) -> dict:
        self.expect(b"{")
        self.skip_ws()
        out: dict = {}
        if self.data.startswith(b"}", self.pos):
            self.pos += 1
            return out
        while True:
            self.skip_ws()
            key = self.parse_string()
            self.skip_ws()
            self.expect(b":")
            self.skip_ws()
            out[key] = self.parse_value()
            self.skip_ws()
            if self.data.startswith(b",", self.pos):
                self.pos += 1
                continue
            self.expect(b"}")
            return out

    def parse_array(self) -> list:
        self.expect(b"[")
        self.skip_ws()
        out: list = []
        if self.data.startswith(b"]", self.pos):
            self.pos += 1
            return out
        while True:
            self.skip_ws()
            out.append(self.parse_value())
            self.skip_ws()
            if self.data.startswith(b",", self.pos):
                self.pos += 1
                continue
            self.expect(b"]")
            return out

    def parse_string(self) -> str:
        self.expect(b'"')
        chars: list[str] = []
        data = self.data
        while True:
            if self.pos >= len(data):
                raise self.error("unterminated string")
            b = data[self.pos]
            if b == ord('"'):
                self.pos += 1
                return "".join(chars)
            if b == ord("\\"):
                self.pos += 1
                if self.pos >= len(data):
                    raise self.error("dangling escape")
                esc = data[self.pos]
                if esc in _ESCAPES:
                    chars.append(_ESCAPES[esc])
                    self.pos += 1
                elif esc == ord("u"):
                    chars.append(self.parse_unicode_escape())
                else:
                    raise self.error(f"bad escape \\{chr(esc)}")
                continue
            # Raw UTF-8 run up to the next quote or escape.
            end = self.pos
            while end < len(data) and data[end] not in (ord('"'), ord("\\")):
                end += 1
            try:
                chars.append(data[self.pos : end].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise self.error(f"invalid UTF-8 in string: {exc}") from exc
            self.pos = end

    def parse_unicode_escape(self) -> str:
        def take4() -> int:
            quad = self.data[self.pos : self.pos + 4]
            if len(quad) != 4:
                raise self.error("\\u needs four hex digits")
            try:
                return int(quad, 16)
            except ValueError as exc:
                raise self.error("\\u needs four hex digits") from exc

        self.pos += 1  # past 'u'
        code = take4()
        self.pos += 4
        if 0xD800 <= code <= 0xDBFF and self.data.startswith(b"\\u", self.pos):
            self.pos += 2
            low = take4()
            if 0xDC00 <= low <= 0xDFFF:
                self.pos += 4
                code = 0x10000 + ((code - 0xD800) << 10) + (low - 0xDC00)
            else:
                self.pos -= 2
        return chr(code)

    def parse_number(self):
        start = self.pos
        data = self.data
        if data.startswith(b"-", self.pos):
            self.pos += 1
        digits_start = self.pos
        while self.pos < len(data) and ord("0") <= data[self.pos] <= ord("9"):
            self.pos += 1
        if self.pos == digits_start:
            raise self.error("malformed value")
        if data[digits_start] == ord("0") and self.pos - digits_start > 1:
            raise self.error("leading zero")
        integral = True
        if data.startswith(b".", self.pos):
            integral = False
            self.pos += 1
            frac_start = self.pos
            while self.pos < len(data) and ord("0") <= data[self.pos] <= ord("9"):
                self.pos += 1
            if self.pos == frac_start:
                raise self.error("digits required after decimal point")
        if self.pos < len(data) and data[self.pos] in b"eE":
            integral = False
            self.pos += 1
            if self.pos < len(data) and data[self.pos] in b"+-":
                self.pos += 1
            exp_start = self.pos
            while self.pos < len(data) and ord("0") <= data[self.pos] <= ord("9"):
                self.pos += 1
            if self.pos == exp_start:
                raise self.error("digits required in exponent")
        text = data[start : self.pos].decode("ascii")
        return int(text) if integral else float(text)


def parse_json_value(data: bytes | str):
    """Parse one JSON value; raises JsonValueError on anything malformed."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return _Parser(data).parse()


def json_equal(a: bytes | str, b: bytes | str) -> bool:
    """Structural equality of two JSON texts; byte equality as a fallback.

    When both sides parse, compares the parsed values (whitespace and key
    order insensitive); otherwise compares raw bytes.
    """
    try:
        return parse_json_value(a) == parse_json_value(b)
    except JsonValueError:
        av = a.encode("utf-8") if isinstance(a, str) else a
        bv = b.encode("utf-8") if isinstance(b, str) else b
        return av == bv
