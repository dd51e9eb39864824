"""Full-pipeline tests on synthetic corpora."""
