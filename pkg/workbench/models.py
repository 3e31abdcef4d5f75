from django.db import models
import uuid


class RunManifest(models.Model):
    SUBCOMMAND_CHOICES = [
        ('tension', 'Surface Tension'),
        ('flow', 'Maximal Flow'),
        ('wulff', 'Wulff Construction'),
        ('deviations', 'Large Deviations'),
        ('coexist', 'Phase Coexistence'),
        ('oracle-suite', 'Oracle Suite'),
    ]

    STATUS_CHOICES = [
        ('RUNNING', 'Running'),
        ('SUCCEEDED', 'Succeeded'),
        ('INVALID', 'Invalid Configuration'),
        ('FAILED', 'Failed'),
    ]

    run_id = models.UUIDField(default=uuid.uuid4, unique=True, editable=False)  # Public run identifier
    subcommand = models.CharField(max_length=20, choices=SUBCOMMAND_CHOICES, db_index=True)
    config = models.JSONField(default=dict)  # Validated config echo
    version = models.CharField(max_length=20)  # Artifact version that produced the outputs
    seed = models.BigIntegerField(default=0)  # Root seed
    seed_ledger = models.JSONField(default=dict)  # Derived seeds per replica / chain
    summary = models.JSONField(default=dict)  # Aggregates reported by the run
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='RUNNING', db_index=True)
    exit_status = models.IntegerField(null=True, blank=True)
    wall_clock_seconds = models.FloatField(null=True, blank=True)
    output_dir = models.CharField(max_length=500)
    error_message = models.TextField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['subcommand', 'created_at'], name='workbench_r_subcomm_5c1e0a_idx'),  # For run history per subcommand
        ]

    def __str__(self):
        return f"Run {self.run_id} - {self.subcommand} ({self.status})"


class RunOutput(models.Model):
    KIND_CHOICES = [
        ('CSV', 'CSV Table'),
        ('SVG', 'SVG Outline'),
        ('JSON', 'JSON Manifest'),
    ]

    manifest = models.ForeignKey(RunManifest, on_delete=models.CASCADE, related_name='outputs')
    path = models.CharField(max_length=500)
    kind = models.CharField(max_length=10, choices=KIND_CHOICES, default='CSV')
    sha256 = models.CharField(max_length=64)  # Checksum of the file bytes
    rows = models.IntegerField(null=True, blank=True)  # Data rows for CSV outputs
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [
            models.Index(fields=['sha256'], name='workbench_r_sha256_8d2f4b_idx'),  # For replay comparisons
        ]

    def __str__(self):
        return f"{self.kind} {self.path} ({self.sha256[:12]})"
