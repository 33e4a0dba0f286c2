"""Level-set field plugins, one `<name>_field.py` module per field type.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""
