"""Tests for tracemembrane package.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""
