import json

import numpy as np
import pytest

from moac.dataio import (InterchangeError, InterchangeRecord, build_record, gen_synthetic,
                         lag1_autocorrelation, load_csv, packetize, read_manifest, read_records,
                         write_records)
from moac.dataio import SensorSeries
from moac.estimators import WienerConfig, wiener_filter
from moac.model import ChannelConfig, apply_channel, reshape_samples, unflatten


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_clean(self, tmp_path):
        rows = "\n".join(f"{i},{i * 2},{i * 3}" for i in range(5))
        s = load_csv(write(tmp_path, "a,b,c\n" + rows + "\n"))
        assert s.readings.shape == (3, 5) and s.dropped == 0
        np.testing.assert_array_equal(s.readings[1], [0, 2, 4, 6, 8])

    def test_drops_incomplete_rows(self, tmp_path):
        text = "a,b,c\n1,2,3\n4,,6\n7,8,9\n1,1,x\n2,2,2\n3,3,3\n"
        s = load_csv(write(tmp_path, text), ["a", "b", "c"])
        assert s.readings.shape == (3, 4) and s.dropped == 2

    def test_column_selection(self, tmp_path):
        s = load_csv(write(tmp_path, "t,a,b\nnow,1,2\nlater,3,4\n"), ["a", "b"])
        np.testing.assert_array_equal(s.readings, [[1, 3], [2, 4]])

    def test_header_only(self, tmp_path):
        with pytest.raises(ValueError, match="zero usable rows"):
            load_csv(write(tmp_path, "a,b,c\n"))

    def test_missing_file_and_column(self, tmp_path):
        with pytest.raises(ValueError):
            load_csv(tmp_path / "nope.csv")
        with pytest.raises(ValueError, match="missing"):
            load_csv(write(tmp_path, "a\n1\n"), ["b"])


class TestPacketize:
    def series(self, N, M=3, lo=0.0):
        return SensorSeries(np.arange(M * N, dtype=float).reshape(M, N) + lo, list("abc")[:M])

    def test_counts(self):
        assert len(packetize(self.series(512), 3, 256, stride=256)) == 2
        ps = packetize(self.series(300), 3, 256, stride=256)
        assert len(ps) == 1 and ps.offsets == [0]

    def test_values_come_from_series(self):
        s = self.series(100)
        ps = packetize(s, 2, 10, stride=7)
        for o, p in zip(ps.offsets, ps.packets):
            np.testing.assert_array_equal(p.values, s.readings[:2, o:o + 10])

    def test_negative_shift(self):
        s = self.series(20, lo=-7.5)
        ps = packetize(s, 3, 10)
        assert ps.shift == 7.5
        np.testing.assert_array_equal(ps.packets[0].values, s.readings[:, :10] + 7.5)

    def test_sensor_selection_and_random_offset(self):
        s = self.series(105)
        ps = packetize(s, 2, 10, sensors=[2, 0], offset="random", seed=1)
        assert ps.sensors == ["c", "a"]
        assert 0 <= ps.offsets[0] <= 5
        np.testing.assert_array_equal(ps.packets[0].values[0], s.readings[2, ps.offsets[0]:][:10])

    def test_insufficient(self):
        with pytest.raises(ValueError, match="insufficient"):
            packetize(self.series(5), 3, 10)
        with pytest.raises(ValueError, match="insufficient"):
            packetize(self.series(50), 4, 10)


class TestSynthetic:
    @pytest.mark.parametrize("rho_t", [0.0, 0.5, 0.9])
    def test_lag1(self, rho_t):
        ps = gen_synthetic(2, 500, 20, rho_t=rho_t, rho_s=0.3, seed=1)
        assert lag1_autocorrelation(ps.array()) == pytest.approx(rho_t, abs=0.05)

    def test_cross_sensor_correlation(self):
        x = gen_synthetic(2, 200, 200, rho_t=0.0, rho_s=0.6, seed=2).array()
        x = x - x.mean(axis=2, keepdims=True)
        r = np.sum(x[:, 0] * x[:, 1]) / np.sqrt(np.sum(x[:, 0] ** 2) * np.sum(x[:, 1] ** 2))
        assert r == pytest.approx(0.6, abs=0.05)

    def test_range_and_determinism(self):
        a = gen_synthetic(4, 32, 5, seed=3).array()
        assert a.min() >= 0 and a.max() <= 10
        np.testing.assert_array_equal(a, gen_synthetic(4, 32, 5, seed=3).array())

    @pytest.mark.parametrize("kw", [dict(rho_t=1.0), dict(rho_s=-0.1), dict(rho_s=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            gen_synthetic(2, 8, 1, **kw)


def make_records(n, M=3, L=5, seed=0):
    rng = np.random.default_rng(seed)
    return [InterchangeRecord(rng.standard_normal((4, M, L)), rng.random((M, L)),
                              rng.random(L), float(rng.uniform(-20, 20)), k)
            for k in range(n)]


class TestInterchange:
    def test_round_trip(self, tmp_path):
        recs = make_records(3)
        write_records(recs, tmp_path / "c")
        back = list(read_records(tmp_path / "c"))
        assert len(back) == 3
        for a, b in zip(recs, back):
            for f in ("x", "target_s", "target_splus"):
                assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
            assert (a.snr_db, a.record_id) == (b.snr_db, b.record_id)

    def test_manifest(self, tmp_path):
        write_records(make_records(2, M=4, L=6), tmp_path / "c")
        m = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert m["version"] == 1 and (m["M"], m["L"], m["count"]) == (4, 6, 2)
        assert m["dtype"] == "f32le"
        assert m["channels"] == ["re_stilde", "im_stilde", "re_y", "im_y"]
        assert len(m["snr_db"]) == 2

    def test_byte_layout(self, tmp_path):
        rec = make_records(1, M=2, L=3)[0]
        write_records([rec], tmp_path / "c")
        raw = np.fromfile(tmp_path / "c" / "data.bin", dtype="<f4")
        assert raw.size == 4 * 6 + 6 + 3
        np.testing.assert_array_equal(raw[:24], rec.x.reshape(-1))
        np.testing.assert_array_equal(raw[24:30], rec.target_s.reshape(-1))
        np.testing.assert_array_equal(raw[30:], rec.target_splus)

    def test_truncated(self, tmp_path):
        write_records(make_records(1), tmp_path / "c")
        data = tmp_path / "c" / "data.bin"
        data.write_bytes(data.read_bytes()[:-4])
        with pytest.raises(InterchangeError, match="truncated data"):
            list(read_records(tmp_path / "c"))

    def test_shape_mismatch(self, tmp_path):
        write_records(make_records(2, M=13, L=8), tmp_path / "c")
        mpath = tmp_path / "c" / "manifest.json"
        m = json.loads(mpath.read_text())
        m["M"] = 14
        mpath.write_text(json.dumps(m))
        with pytest.raises(InterchangeError, match="shape mismatch"):
            list(read_records(tmp_path / "c"))

    def test_endianness_marker(self, tmp_path):
        write_records(make_records(1), tmp_path / "c")
        mpath = tmp_path / "c" / "manifest.json"
        m = json.loads(mpath.read_text())
        m["dtype"] = "f32be"
        mpath.write_text(json.dumps(m))
        with pytest.raises(InterchangeError, match="endianness"):
            read_manifest(tmp_path / "c")

    def test_refuses_nonempty_target(self, tmp_path):
        (tmp_path / "c").mkdir()
        (tmp_path / "c" / "x").write_text("")
        with pytest.raises(FileExistsError):
            write_records(make_records(1), tmp_path / "c")

    def test_failed_write_leaves_nothing(self, tmp_path):
        def boom(path):
            raise RuntimeError("disk full")
        with pytest.raises(RuntimeError):
            write_records(make_records(1), tmp_path / "c", {"extra": boom})
        assert list(tmp_path.iterdir()) == []

    def test_record_shape_validation(self):
        with pytest.raises(InterchangeError):
            InterchangeRecord(np.zeros((3, 2, 2)), np.zeros((2, 2)), np.zeros(2), 0.0)
        with pytest.raises(InterchangeError):
            InterchangeRecord(np.zeros((4, 2, 2)), np.zeros((2, 3)), np.zeros(2), 0.0)


def test_build_record_channels():
    rng = np.random.default_rng(9)
    cfg = ChannelConfig.random(4, 8, snr_db=5.0, seed=rng)
    s = rng.random((4, 8)) * 10
    y = apply_channel(cfg, s, seed=rng)
    rec = build_record(cfg, s, y, average=True)
    st = unflatten(wiener_filter(y, cfg, WienerConfig.from_channel(cfg)), 4)
    np.testing.assert_array_equal(rec.x[0], st.real.astype(np.float32))
    np.testing.assert_array_equal(rec.x[1], st.imag.astype(np.float32))
    yr = reshape_samples(y, 4, 8)
    np.testing.assert_array_equal(rec.x[2], yr.real.astype(np.float32))
    np.testing.assert_array_equal(rec.x[3], yr.imag.astype(np.float32))
    np.testing.assert_allclose(rec.target_splus, s.mean(axis=0), rtol=1e-6)
    assert rec.snr_db == 5.0
