"""
Services package
Orchestrates the engines into analysis runs, verdict ledgers and the randomized suite
"""
