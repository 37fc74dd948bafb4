from unittest import TestCase  # Don't need database

from smb.exceptions import IntegrationError, SimulationError


class IntegrationErrorTests(TestCase):
    def test_plain_message(self):
        self.assertEqual(str(IntegrationError("Step size too small")), "Step size too small")

    def test_context(self):
        exc = IntegrationError("Step size too small", time_reached=12.5, column='U1:3', switch=4)
        self.assertEqual(str(exc), "Step size too small (t=12.5 s, column U1:3, switch 4)")

    def test_tagged_names_context_once(self):
        exc = IntegrationError("Integrator aborted", time_reached=30.0).tagged('U1:0', 7)
        self.assertEqual(str(exc), "Integrator aborted (t=30 s, column U1:0, switch 7)")
        self.assertEqual(str(exc).count("t="), 1)
        self.assertEqual(exc.message, "Integrator aborted")
        self.assertIsInstance(exc, SimulationError)

    def test_tagging_twice(self):
        exc = IntegrationError("Integrator aborted", time_reached=1.0)
        exc = exc.tagged('U1:0', 1).tagged('U2:1', 2)
        self.assertEqual(str(exc), "Integrator aborted (t=1 s, column U2:1, switch 2)")
