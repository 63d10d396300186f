"""Executable semantics and a symbolic borrow checker for a small Rust-like language."""

__version__ = "0.1.0"
