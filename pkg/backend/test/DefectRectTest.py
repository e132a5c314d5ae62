import unittest

from echomap.DefectClass import DefectClass
from echomap.DefectRect import DefectRect
from echomap.EchoMapException import InvalidSpecException


class DefectRectTestCase(unittest.TestCase):

    def test_contains_is_half_open(self):
        """T1.1.1 - Rectangles include their low edges and exclude their high edges"""
        rect = DefectRect(9.0, 14.0, 12.0, 12.0, DefectClass.SHALLOW_DELAM)
        self.assertTrue(rect.contains(9.0, 14.0))
        self.assertTrue(rect.contains(20.999, 25.999))
        self.assertFalse(rect.contains(21.0, 20.0))
        self.assertFalse(rect.contains(15.0, 26.0))

    def test_non_positive_size_is_rejected(self):
        """T1.1.2 - Zero-width rectangles are invalid"""
        with self.assertRaises(InvalidSpecException):
            DefectRect(0.0, 0.0, 0.0, 5.0, DefectClass.VOID)
        with self.assertRaises(ValueError):
            DefectRect(0.0, 0.0, 5.0, -1.0, DefectClass.VOID)

    def test_overlap_and_touching(self):
        """T1.1.3 - Rectangles sharing only an edge do not overlap"""
        a = DefectRect(0.0, 0.0, 10.0, 10.0, DefectClass.VOID)
        self.assertTrue(a.overlaps(DefectRect(5.0, 5.0, 10.0, 10.0, DefectClass.VOID)))
        self.assertFalse(a.overlaps(DefectRect(10.0, 0.0, 5.0, 5.0, DefectClass.VOID)))

    def test_dict_form_uses_class_names(self):
        """T1.1.4 - Serialized rectangles name their class"""
        rect = DefectRect(1.0, 2.0, 3.0, 4.0, DefectClass.DEEP_DELAM)
        d = rect.to_dict()
        self.assertEqual(d["class"], "DEEP_DELAM")
        self.assertEqual(DefectRect.from_dict(d), rect)
        self.assertEqual(DefectRect.from_dict({**d, "class": "Honeycombing"}).defect_class, DefectClass.HONEYCOMB)

    def test_class_parsing(self):
        """T1.1.5 - Classes parse from labels, names and display names"""
        self.assertEqual(DefectClass.parse(2), DefectClass.VOID)
        self.assertEqual(DefectClass.parse("void"), DefectClass.VOID)
        self.assertEqual(DefectClass.parse("D4"), DefectClass.DEEP_DELAM)
        self.assertEqual(DefectClass.parse("Shallow Delamination"), DefectClass.SHALLOW_DELAM)
        with self.assertRaises(ValueError):
            DefectClass.parse("crack")


if __name__ == '__main__':
    unittest.main()
