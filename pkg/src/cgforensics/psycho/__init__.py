from .store import (StudyStore, StudyError, StudyFullError, UnknownSessionError,
                    DuplicateAnnotationError, ValidationError, create_study)
from .service import create_app

__all__ = ["StudyStore", "StudyError", "StudyFullError", "UnknownSessionError",
           "DuplicateAnnotationError", "ValidationError", "create_study", "create_app"]
