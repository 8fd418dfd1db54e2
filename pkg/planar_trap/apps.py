from django.apps import AppConfig


class PlanarTrapConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'planar_trap'
    verbose_name = 'Planar trap design toolkit'
