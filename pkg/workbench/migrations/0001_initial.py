# Generated by Django 4.2.7

from django.db import migrations, models
import django.db.models.deletion
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.UUIDField(default=uuid.uuid4, editable=False, unique=True)),
                ('subcommand', models.CharField(choices=[('tension', 'Surface Tension'), ('flow', 'Maximal Flow'), ('wulff', 'Wulff Construction'), ('deviations', 'Large Deviations'), ('coexist', 'Phase Coexistence'), ('oracle-suite', 'Oracle Suite')], db_index=True, max_length=20)),
                ('config', models.JSONField(default=dict)),
                ('version', models.CharField(max_length=20)),
                ('seed', models.BigIntegerField(default=0)),
                ('seed_ledger', models.JSONField(default=dict)),
                ('summary', models.JSONField(default=dict)),
                ('status', models.CharField(choices=[('RUNNING', 'Running'), ('SUCCEEDED', 'Succeeded'), ('INVALID', 'Invalid Configuration'), ('FAILED', 'Failed')], db_index=True, default='RUNNING', max_length=20)),
                ('exit_status', models.IntegerField(blank=True, null=True)),
                ('wall_clock_seconds', models.FloatField(blank=True, null=True)),
                ('output_dir', models.CharField(max_length=500)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['subcommand', 'created_at'], name='workbench_r_subcomm_5c1e0a_idx')],
            },
        ),
        migrations.CreateModel(
            name='RunOutput',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('path', models.CharField(max_length=500)),
                ('kind', models.CharField(choices=[('CSV', 'CSV Table'), ('SVG', 'SVG Outline'), ('JSON', 'JSON Manifest')], default='CSV', max_length=10)),
                ('sha256', models.CharField(max_length=64)),
                ('rows', models.IntegerField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('manifest', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='outputs', to='workbench.runmanifest')),
            ],
            options={
                'indexes': [models.Index(fields=['sha256'], name='workbench_r_sha256_8d2f4b_idx')],
            },
        ),
    ]
