"""MAAT: a model-agnostic adaptive testing engine.

Selects questions step by step for an examinee, jointly optimizing
informativeness (expected model change) and knowledge-concept coverage
(importance-weighted submodular coverage), with a simulation harness and
an HTTP session service for live tests.
"""

__version__ = "0.1.0"
