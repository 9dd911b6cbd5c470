"""Classify web sites into top-level NAICS industry categories.

Pipeline: targeted spidering (:mod:`sitecat.spider`), metatag-first text
extraction (:mod:`sitecat.html_extract`), latent semantic indexing
(:mod:`sitecat.lsi`), K-nearest-neighbor decisions (:mod:`sitecat.classifier`)
and precision/recall/F1 evaluation (:mod:`sitecat.evaluation`).
"""

__version__ = "0.1.0"

from .classifier import ClassificationResult, DecisionConfig, classify, classify_batch, rank_categories
from .evaluation import Decision, EvalReport, evaluate, f1, render_report
from .html_extract import PageFields, corpus_tag_stats, count_words, extract_fields
from .lsi import LsiIndex, build_index, fold_in_query, load_index, save_index, search, tokenize
from .spider import CrawlPolicy, RepresentativeDoc, crawl_batch, crawl_site, select_links
from .taxonomy import Taxonomy, generalize, load_crosswalk, load_taxonomy, map_sic
