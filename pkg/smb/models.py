from django.db import models


class SimulationRun(models.Model):
    """ One invocation of the `smbforge` command. """
    RUNNING = 'running'
    FINISHED = 'finished'
    FAILED = 'failed'
    STATUS_CHOICES = [(RUNNING, 'Running'), (FINISHED, 'Finished'), (FAILED, 'Failed')]

    mode = models.CharField(max_length=31)
    seed = models.BigIntegerField(default=0)
    config_digest = models.CharField(max_length=64, db_index=True,
                                     help_text="SHA-256 of the resolved configuration")
    resolved_config = models.TextField()
    output_dir = models.CharField(max_length=1023)
    status = models.CharField(max_length=15, choices=STATUS_CHOICES, default=RUNNING)
    wall_time = models.FloatField(null=True, blank=True, help_text="Seconds")
    messages = models.TextField(blank=True)
    time_created = models.DateTimeField(auto_now_add=True)
    last_updated = models.DateTimeField(auto_now=True)

    def __str__(self):
        return "{} run {} ({})".format(self.mode, self.pk, self.status)

    class Meta:
        ordering = ["-time_created"]
