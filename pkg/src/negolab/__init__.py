"""Negotiation-agent laboratory.

A desk-scale testbed for bargaining agents that exchange coarse dialogue
acts: the game rules (`env`), synthetic corpora (`corpus`), a recurrent
act policy (`model`), SL/RL/interleaved training (`training`), expert-in-
the-loop data acquisition (`acquisition`), evaluation (`metrics`), an
experiment runner (`experiments`) and a live human-vs-agent arena
(`arena`).
"""

__version__ = "0.1.0"
