"""Word tokenization used for queries, titles and composed search text."""
import string

_STRIP = string.punctuation


def tokenize(text) -> tuple[str, ...]:
    """Whitespace split, lowercase, strip punctuation at word edges.

    Already-split word sequences are normalized the same way. Empty words
    after stripping are dropped, so ``"v-neck,"`` becomes ``"v-neck"``.
    """
    if isinstance(text, str):
        parts = text.split()
    else:
        parts = [w for chunk in text for w in str(chunk).split()]
    out = []
    for w in parts:
        w = w.lower().strip(_STRIP)
        if w:
            out.append(w)
    return tuple(out)
