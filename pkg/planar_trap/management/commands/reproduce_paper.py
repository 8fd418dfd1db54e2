import time

from ...pipeline import run_reproduce_paper
from ..base import TrapCommand


class Command(TrapCommand):
    help = 'Run every stage of the five-wire trap reproduction and check each result against its band'

    def run(self, **options):
        start_time = time.time()
        self.stdout.write(f'Reproducing the five-wire trap into {self.config.output_dir}...')

        def progress(line):
            style = self.style.SUCCESS if line.startswith('PASS') else self.style.ERROR
            self.stdout.write(style(f'  {line}'))

        result = run_reproduce_paper(self.config, progress)
        elapsed = time.time() - start_time
        self.stdout.write(f"Stages completed: {', '.join(result.summary['completed_stages']) or 'none'}")

        if result.failed_stage:
            self.fail(f"Stage '{result.failed_stage}' failed: {result.summary['error']}")
        if result.status != 0:
            failed = [c['name'] for c in result.summary['checks'] if not c['passed']]
            self.fail(f"{len(failed)} checks outside their bands: {', '.join(failed)}")
        self.stdout.write(self.style.SUCCESS(
            f"All {len(result.summary['checks'])} checks passed in {elapsed:.1f} seconds"))
