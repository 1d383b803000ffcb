"""Numerical laboratory for atomic orbital magnetism.

Larmor diamagnetic / complete Van Vleck paramagnetic decomposition of the
zero-field orbital susceptibility of a gas of charged particles in deep
wells, with Bloch-band, thermodynamic, and tight-binding asymptotics
machinery to cross-validate the bulk limit against the single-well values.
"""

__version__ = "0.1.0"
