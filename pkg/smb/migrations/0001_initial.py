from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.AutoField(verbose_name='ID', serialize=False, auto_created=True, primary_key=True)),
                ('mode', models.CharField(max_length=31)),
                ('seed', models.BigIntegerField(default=0)),
                ('config_digest', models.CharField(db_index=True, help_text='SHA-256 of the resolved configuration', max_length=64)),
                ('resolved_config', models.TextField()),
                ('output_dir', models.CharField(max_length=1023)),
                ('status', models.CharField(choices=[('running', 'Running'), ('finished', 'Finished'), ('failed', 'Failed')], default='running', max_length=15)),
                ('wall_time', models.FloatField(blank=True, help_text='Seconds', null=True)),
                ('messages', models.TextField(blank=True)),
                ('time_created', models.DateTimeField(auto_now_add=True)),
                ('last_updated', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-time_created'],
            },
        ),
    ]
