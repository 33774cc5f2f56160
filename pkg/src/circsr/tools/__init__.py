"""Small helper programs shipped with circsr."""
