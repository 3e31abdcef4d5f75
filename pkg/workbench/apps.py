from django.apps import AppConfig
import logging

logger = logging.getLogger(__name__)


class WorkbenchConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'workbench'
    verbose_name = 'Dilute random-cluster workbench'

    def ready(self):
        """
        Make sure the output directory exists before any subcommand runs.
        """
        from django.conf import settings

        try:
            settings.DILUTELAB_OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
            logger.debug(f"Workbench ready, outputs under {settings.DILUTELAB_OUTPUT_DIR}")
        except OSError as e:
            logger.error(f"Could not create output directory {settings.DILUTELAB_OUTPUT_DIR}: {str(e)}")
