"""
CatArray computational modules
"""
