"""
Database module for the stretched-cluster simulator.
Persists immutable segment-cache entries so repeated report runs over the
same scenario start warm.
"""
import logging

from sqlalchemy import BigInteger, Column, Integer, String, UniqueConstraint, create_engine, select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import declarative_base, sessionmaker

from utils.config import load_dotenv, segment_cache_url

logger = logging.getLogger(__name__)

# Create a base class for declarative models
Base = declarative_base()


class SegmentCacheEntry(Base):
    """Partial sum of one aligned accounting segment"""
    __tablename__ = "segment_cache_entries"
    __table_args__ = (
        UniqueConstraint("scope", "namespace", "resource", "width", "segment_index",
                         name="uq_segment"),
    )

    id = Column(Integer, primary_key=True)
    scope = Column(String, index=True, nullable=False)
    namespace = Column(String, nullable=False)
    resource = Column(String, nullable=False)
    width = Column(Integer, nullable=False)
    segment_index = Column(Integer, nullable=False)
    seconds = Column(BigInteger, nullable=False)

    def __repr__(self):
        return (f"<SegmentCacheEntry(scope='{self.scope}', namespace='{self.namespace}', "
                f"k={self.segment_index})>")


class SegmentStore:
    """
    Write-through store behind SegmentCache.

    Failures are logged and swallowed: the in-memory cache keeps working
    and query results never depend on the store.
    """

    def __init__(self, url):
        self.url = url
        self.engine = create_engine(url)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        self.available = True

    def init_db(self):
        """Create the cache table if it does not exist"""
        try:
            Base.metadata.create_all(bind=self.engine)
        except SQLAlchemyError as e:
            logger.warning("Segment cache store unavailable, using memory only: %s", e)
            self.available = False

    def load(self, scope):
        """Return {(namespace, resource, width, k): seconds} stored for a scope"""
        if not self.available:
            return {}
        db = self.SessionLocal()
        try:
            rows = db.execute(select(SegmentCacheEntry).where(SegmentCacheEntry.scope == scope)).scalars()
            return {(r.namespace, r.resource, r.width, r.segment_index): r.seconds for r in rows}
        except SQLAlchemyError as e:
            logger.warning("Could not read segment cache for %s: %s", scope, e)
            return {}
        finally:
            db.close()

    def save(self, scope, key, seconds):
        if not self.available:
            return
        namespace, resource, width, index = key
        db = self.SessionLocal()
        try:
            db.add(SegmentCacheEntry(scope=scope, namespace=namespace, resource=resource,
                                     width=width, segment_index=index, seconds=seconds))
            db.commit()
        except SQLAlchemyError as e:
            db.rollback()
            logger.debug("Segment %s already stored or store failed: %s", key, e)
        finally:
            db.close()


def get_store(url=None):
    """
    Open the configured segment store.

    Args:
        url (str): SQLAlchemy URL; defaults to SEGMENT_CACHE_URL

    Returns:
        SegmentStore: ready store, or None when no URL is configured
    """
    load_dotenv()
    url = url or segment_cache_url()
    if not url:
        return None
    try:
        store = SegmentStore(url)
    except (SQLAlchemyError, ImportError) as e:
        logger.warning("Segment cache store unavailable, using memory only: %s", e)
        return None
    store.init_db()
    return store if store.available else None


def init_db(url=None):
    """Initialize the database by creating all tables"""
    store = get_store(url)
    if store is None:
        logger.warning("No SEGMENT_CACHE_URL configured; nothing to initialize")
        return False
    return True
