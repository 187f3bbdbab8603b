"""Desk-scale federated sequential recommendation with an external embedding service.

Modules: ``domain`` (types and splits), ``ingest`` (raw data and synthetic
corpora), ``embed_service`` (embedding providers and cache), ``privacy``
(d_X-private item replacement), ``seqmodel`` (GRU / self-attention
recommenders with manual gradients), ``fedsim`` (federated training and
baselines), ``attacks`` (SIA / SIAUI), ``metrics`` (HR / NDCG), ``config`` and
``cli``.
"""

__version__ = "0.1.0"
