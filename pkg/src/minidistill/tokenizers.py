"""Two deliberately different tokenizers over one shared byte alphabet.

The char tokenizer maps every alphabet character to one token. The
greedy-merge tokenizer keeps all single characters and adds an ordered
list of multi-character strings, consumed longest-match-first, left to
right. Both are lossless (decode . encode == id) and expose exact byte
spans so tokenizations of the same text can be aligned span-by-span.

Ids are dense and stable: PAD=0, BOS=1, EOS=2, then alphabet characters
in listed order, then merges in listed order. Control tokens decode to
the empty string and never appear in encoder output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class AlphabetError(ValueError):
    """Input text contains a byte outside the tokenizer alphabet."""


class VocabError(ValueError):
    """A token id outside the vocabulary."""


PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
_NUM_CONTROLS = 3
_CONTROL_NAMES = ("PAD", "BOS", "EOS")

# digits, task operators/punctuation, lowercase letters — everything the
# synthetic task suites and the noise subset draw from
DEFAULT_ALPHABET = "0123456789+=():;abcdefghijklmnopqrstuvwxyz"
DEFAULT_MERGES = ("answer:", "sort:", "bal:", "yes", "no")


@dataclass(frozen=True)
class TokenSpan:
    """Half-open byte range [start, end) of one token in the decoded text."""

    index: int
    start: int
    end: int


class TokenizerSpec:
    """Immutable tokenizer: vocabulary, optional ordered merges, control ids."""

    def __init__(self, kind: str, alphabet: str, merges: tuple[str, ...] = ()):
        if kind not in ("char", "greedy-merge"):
            raise ValueError(f"unknown tokenizer kind {kind!r}")
        if kind == "char" and merges:
            raise ValueError("char tokenizer takes no merges")
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet has duplicate characters")
        for m in merges:
            if len(m) < 2:
                raise ValueError(f"merge {m!r} must be multi-character")
            if any(c not in alphabet for c in m):
                raise ValueError(f"merge {m!r} uses characters outside the alphabet")
        if len(set(merges)) != len(merges):
            raise ValueError("duplicate merge strings")

        self.kind = kind
        self.alphabet = alphabet
        self.merges = tuple(merges)
        strings = [""] * _NUM_CONTROLS + list(alphabet) + list(merges)
        self.token_strings: tuple[str, ...] = tuple(strings)
        self.vocab_size = len(strings)
        self._string_to_id = {
            s: i for i, s in enumerate(strings) if i >= _NUM_CONTROLS
        }
        self._char_to_id = {
            c: i + _NUM_CONTROLS for i, c in enumerate(alphabet)
        }
        # candidates per leading char, longest first, for the greedy scan
        by_first: dict[str, list[str]] = {}
        for s in list(merges) + list(alphabet):
            by_first.setdefault(s[0], []).append(s)
        self._candidates = {
            c: sorted(ss, key=len, reverse=True) for c, ss in by_first.items()
        }

    def is_control(self, token_id: int) -> bool:
        return 0 <= token_id < _NUM_CONTROLS

    def id_for(self, token_string: str) -> int | None:
        """Vocab id of an exact token string, or None."""
        return self._string_to_id.get(token_string)

    def encode_with_spans(self, text: str) -> tuple[list[int], list[TokenSpan]]:
        """Tokenize ``text``; spans tile [0, len(text)) in order.

        greedy-merge consumes the longest vocabulary string matching at the
        cursor, scanning left to right. Raises AlphabetError on characters
        outside the alphabet. Control tokens are never emitted.
        """
        ids: list[int] = []
        spans: list[TokenSpan] = []
        if self.kind == "char":
            for i, c in enumerate(text):
                tid = self._char_to_id.get(c)
                if tid is None:
                    raise AlphabetError(f"character {c!r} at offset {i} not in alphabet")
                ids.append(tid)
                spans.append(TokenSpan(len(spans), i, i + 1))
            return ids, spans

        pos = 0
        n = len(text)
        while pos < n:
            cands = self._candidates.get(text[pos])
            if cands is None:
                raise AlphabetError(f"character {text[pos]!r} at offset {pos} not in alphabet")
            for s in cands:
                if text.startswith(s, pos):
                    ids.append(self._string_to_id[s])
                    spans.append(TokenSpan(len(spans), pos, pos + len(s)))
                    pos += len(s)
                    break
            else:  # pragma: no cover - single chars always match
                raise AlphabetError(f"no token matches at offset {pos}")
        return ids, spans

    def encode(self, text: str) -> list[int]:
        return self.encode_with_spans(text)[0]

    def decode(self, ids) -> str:
        """Concatenate token strings; control tokens contribute nothing."""
        out = []
        for tid in ids:
            tid = int(tid)
            if tid < 0 or tid >= self.vocab_size:
                raise VocabError(f"token id {tid} outside vocabulary of {self.vocab_size}")
            out.append(self.token_strings[tid])
        return "".join(out)

    def spans_for_ids(self, ids) -> list[TokenSpan]:
        """Spans of an existing token sequence over its own decoded text.

        Control tokens get empty spans at the current offset; the trailing
        empty span is what lets an EOS position align across tokenizers.
        """
        spans: list[TokenSpan] = []
        pos = 0
        for i, tid in enumerate(ids):
            tid = int(tid)
            if tid < 0 or tid >= self.vocab_size:
                raise VocabError(f"token id {tid} outside vocabulary of {self.vocab_size}")
            length = len(self.token_strings[tid])
            spans.append(TokenSpan(i, pos, pos + length))
            pos += length
        return spans

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Plain-text dump: header, controls, chars, ordered merges."""
        lines = ["minidistill-tokenizer v1", f"kind {self.kind}"]
        for name in _CONTROL_NAMES:
            lines.append(f"control {name}")
        for c in self.alphabet:
            lines.append(f"char {json.dumps(c)}")
        for m in self.merges:
            lines.append(f"merge {json.dumps(m)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TokenizerSpec":
        raw = Path(path).read_text(encoding="utf-8").splitlines()
        lines = [ln for ln in raw if ln.strip()]
        if not lines or lines[0] != "minidistill-tokenizer v1":
            raise ValueError(f"{path}: not a v1 tokenizer file")
        if not lines[1].startswith("kind "):
            raise ValueError(f"{path}: missing kind line")
        kind = lines[1][5:].strip()
        alphabet: list[str] = []
        merges: list[str] = []
        for ln in lines[2:]:
            tag, _, rest = ln.partition(" ")
            if tag == "control":
                continue
            if tag == "char":
                alphabet.append(json.loads(rest))
            elif tag == "merge":
                merges.append(json.loads(rest))
            else:
                raise ValueError(f"{path}: unknown line {ln!r}")
        return cls(kind, "".join(alphabet), tuple(merges))


def char_tokenizer(alphabet: str = DEFAULT_ALPHABET) -> TokenizerSpec:
    return TokenizerSpec("char", alphabet)


def merge_tokenizer(
    alphabet: str = DEFAULT_ALPHABET, merges: tuple[str, ...] = DEFAULT_MERGES
) -> TokenizerSpec:
    return TokenizerSpec("greedy-merge", alphabet, merges)


def builtin_tokenizer(name: str) -> TokenizerSpec:
    """Resolve the names accepted in config files ("char" / "merge")."""
    if name == "char":
        return char_tokenizer()
    if name == "merge":
        return merge_tokenizer()
    raise ValueError(f"unknown builtin tokenizer {name!r}")
