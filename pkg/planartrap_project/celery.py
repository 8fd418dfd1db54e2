import os
from celery import Celery

# Set the default Django settings module
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'planartrap_project.settings')

app = Celery('planartrap_project')

# Configure Celery using settings from Django settings.py
app.config_from_object('django.conf:settings', namespace='CELERY')

# Picks up planar_trap.tasks
app.autodiscover_tasks()
