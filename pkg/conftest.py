import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'planartrap_project.settings')
django.setup()
