"""Numerical toolkit for quasiconformal and BMO analysis on the Heisenberg group."""
