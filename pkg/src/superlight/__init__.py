"""Superlight: light-client-only blockchain with self-contained proofs."""
