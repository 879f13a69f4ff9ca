"""Proxy token counting used whenever a backend does not report usage."""


def count_tokens(text: str) -> int:
    """ceil(utf8_bytes / 4): crude, deterministic, and monotone under
    concatenation. All acceptance arithmetic uses this proxy, never absolute
    parity with any real tokenizer."""
    n = len(text.encode("utf-8"))
    return (n + 3) // 4
