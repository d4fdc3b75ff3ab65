"""Automated medical query (AMQ) toolkit.

Retrieves and ranks dictionary preferred terms for a free-text medical
concept: lexical matching, cosine scoring over an embedding store,
automated threshold selection (two-means partition + knee detection),
plus an evaluation harness and a review service.
"""

__version__ = "0.1.0"
