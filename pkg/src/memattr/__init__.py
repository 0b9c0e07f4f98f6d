"""Retrieval-grounded harmfulness attribution for Chinese multimodal memes.

The package retrieves background knowledge for a meme from a harmful-semantics
lexicon (hybrid lexical/dense search, yes-logit reranking, threshold gating),
then asks a model to weigh a harmful against a non-harmful reading of the meme
and commit to a grounded decision. An evaluation harness scores decision
quality (accuracy, precision, recall, F1) and explanation quality (BLEU-4,
ROUGE-L, five-dimension Likert judging).
"""

__version__ = "0.1.0"
