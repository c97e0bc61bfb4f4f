"""
Line-anchored diagnostics for JSON documents.

json.loads does not keep positions, so once a document has parsed we
scan it a second time and remember the line every value starts on,
keyed by its path (keys and list indices from the root).
"""
import bisect
import json
import re
from json.decoder import scanstring

from pydantic import ValidationError

from utils.errors import Diagnostic, ScenarioError

_LITERAL = re.compile(r'-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][+-]?\d+)?|true|false|null')
_WS = " \t\r\n"
_NONFINITE = re.compile(r"(?<![\w\"])-?(?:NaN|Infinity)(?![\w\"])")

# Fields whose "must be > 0" failures get their own code.
_CAPACITY_FIELDS = {"cpu_capacity", "mem_capacity", "count"}


class _NonFiniteConstant(ValueError):
    pass


def _reject_constant(name):
    raise _NonFiniteConstant(name)


class LineIndex:
    """Maps document paths to 1-based line numbers."""

    def __init__(self, text):
        self.text = text
        self._newlines = [i for i, c in enumerate(text) if c == "\n"]
        self.paths = {}
        self._scan_value(0, ())

    def line_of(self, offset):
        return bisect.bisect_left(self._newlines, offset) + 1

    def lookup(self, path):
        """Line of the deepest known prefix of path."""
        path = tuple(path)
        while path:
            if path in self.paths:
                return self.paths[path]
            path = path[:-1]
        return self.paths.get((), 1)

    def _skip(self, i):
        while i < len(self.text) and self.text[i] in _WS:
            i += 1
        return i

    def _scan_value(self, i, path):
        i = self._skip(i)
        self.paths[path] = self.line_of(i)
        c = self.text[i]
        if c == "{":
            i = self._skip(i + 1)
            if self.text[i] == "}":
                return i + 1
            while True:
                key, i = scanstring(self.text, self._skip(i) + 1)
                i = self._skip(i) + 1  # ':'
                i = self._skip(self._scan_value(i, path + (key,)))
                if self.text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if c == "[":
            i = self._skip(i + 1)
            if self.text[i] == "]":
                return i + 1
            index = 0
            while True:
                i = self._skip(self._scan_value(i, path + (index,)))
                index += 1
                if self.text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if c == '"':
            _, end = scanstring(self.text, i + 1)
            return end
        match = _LITERAL.match(self.text, i)
        return match.end()


def parse_json(text):
    """
    Parse JSON text and build its line index.

    Returns:
        tuple: (document, LineIndex)

    Raises:
        ScenarioError: with a parse-error diagnostic carrying the line
    """
    try:
        document = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ScenarioError([Diagnostic("parse-error", e.msg, (), e.lineno)])
    except _NonFiniteConstant as e:
        # JSON has no NaN or Infinity; Python's decoder accepts them anyway.
        match = _NONFINITE.search(text)
        line = text.count("\n", 0, match.start()) + 1 if match else None
        raise ScenarioError([Diagnostic("parse-error", f"non-finite number {e} is not valid JSON", (), line)])
    return document, LineIndex(text)


def from_validation_error(error: ValidationError, prefix=()):
    """Convert pydantic errors into diagnostics with stable codes."""
    diagnostics = []
    for item in error.errors():
        path = tuple(prefix) + tuple(item["loc"])
        field_name = next((p for p in reversed(path) if isinstance(p, str)), "")
        if item["type"] == "greater_than" and field_name in _CAPACITY_FIELDS:
            code = "nonpositive-capacity"
        elif item["type"] == "extra_forbidden" and "policy" in path:
            code = "unknown-policy-flag"
        elif "generator" in path and item["type"] not in ("missing", "extra_forbidden"):
            code = "invalid-generator"
        else:
            code = "schema-error"
        where = ".".join(str(p) for p in path) or "<document>"
        diagnostics.append(Diagnostic(code, f"{where}: {item['msg']}", path))
    return diagnostics


def anchor(diagnostics, index):
    """Attach line numbers to diagnostics that lack them."""
    if index is None:
        return list(diagnostics)
    return [d if d.line is not None else d.with_line(index.lookup(d.path))
            for d in diagnostics]
