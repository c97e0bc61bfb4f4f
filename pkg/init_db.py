"""
Database initialization script.
Creates the segment cache table in the database named by SEGMENT_CACHE_URL.
"""
import sys

from utils.config import configure_logging
from utils.database import init_db

if __name__ == "__main__":
    configure_logging()
    print("Initializing segment cache store...")
    if not init_db():
        print("SEGMENT_CACHE_URL is not set; the cache stays in memory.")
        sys.exit(1)
    print("Segment cache tables created.")
