from django.apps import AppConfig


class RaytraceConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'raytrace'
    verbose_name = 'mmWave ray tracing'
