import unittest

import numpy as np

from echomap.Adam import Adam, AdamState, adam_step


class AdamTestCase(unittest.TestCase):

    def test_first_step_moves_by_learning_rate(self):
        """T7.5.1 - The bias-corrected first step moves each weight by lr against its gradient sign"""
        params = {"w": np.array([1.0, -2.0, 0.5])}
        grads = {"w": np.array([0.3, -40.0, 2e-2])}
        adam_step(params, grads, AdamState(), lr=0.1)
        np.testing.assert_allclose(params["w"], [0.9, -1.9, 0.4], atol=1e-6)

    def test_steps_match_reference_recurrence(self):
        """T7.5.2 - Repeated updates follow the Adam moment recurrences"""
        rng = np.random.default_rng(0)
        w = rng.normal(size=4)
        params = {"w": w.copy()}
        optimizer = Adam(lr=0.01, beta1=0.8, beta2=0.99, eps=1e-7)
        m = v = np.zeros(4)
        for t in range(1, 6):
            g = rng.normal(size=4)
            optimizer.step(params, {"w": g})
            m = 0.8 * m + 0.2 * g
            v = 0.99 * v + 0.01 * g * g
            w = w - 0.01 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.99 ** t)) + 1e-7)
        np.testing.assert_allclose(params["w"], w, rtol=1e-12)
        self.assertEqual(optimizer.state.t, 5)

    def test_updates_in_place(self):
        """T7.5.3 - Parameter arrays are updated in place"""
        w = np.zeros(2)
        params = {"w": w}
        self.assertIs(adam_step(params, {"w": np.ones(2)}, AdamState()), params)
        self.assertLess(w[0], 0.0)


if __name__ == '__main__':
    unittest.main()
