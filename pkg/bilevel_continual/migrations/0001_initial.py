# -*- coding: utf-8 -*-
from django.db import migrations, models
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False, verbose_name='ID')),
                ('method', models.CharField(max_length=50)),
                ('seed', models.IntegerField()),
                ('benchmark', models.CharField(max_length=50)),
                ('num_tasks', models.PositiveIntegerField()),
                ('output_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('new', 'New'), ('running', 'Running'), ('done', 'Done'), ('failed', 'Failed')], default='new', max_length=20)),
                ('acc', models.FloatField(help_text='Average final accuracy', null=True)),
                ('fm', models.FloatField(help_text='Forgetting measure', null=True)),
                ('la', models.FloatField(help_text='Learning accuracy', null=True)),
                ('acc_adapt', models.FloatField(help_text='Average final accuracy with test-time adaptation', null=True)),
                ('wall_time', models.FloatField(help_text='Training seconds', null=True)),
                ('error', models.TextField(null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
        ),
    ]
