"""Numerical toolkit for Hörmander-type conditions of jump SDEs."""
