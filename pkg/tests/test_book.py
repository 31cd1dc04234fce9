import numpy as np
import pytest

from lobrl.book import (
    BookLevel,
    BookSnapshot,
    DataIntegrityError,
    InstrumentSpec,
    ParseError,
    TradingDay,
    day_from_rows,
    load_day,
    mid_price,
    parse_orderbook_row,
    serialize_row,
    spread,
    write_day_csv,
)
from lobrl.synthetic import SynthConfig, generate_day

DEPTH1 = InstrumentSpec(depth=1)


def make_snapshot(best_ask=500100, best_bid=500000, depth=10, volume=100):
    asks = tuple(BookLevel(best_ask + 100 * i, volume) for i in range(depth))
    bids = tuple(BookLevel(best_bid - 100 * i, volume) for i in range(depth))
    return BookSnapshot(asks=asks, bids=bids)


class TestInstrumentSpec:
    def test_defaults(self):
        spec = InstrumentSpec()
        assert spec.tick_size == 0.01
        assert spec.depth == 10
        assert spec.tick_units == 100

    @pytest.mark.parametrize("kw", [{"tick_size": 0.0}, {"tick_size": -1}, {"depth": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            InstrumentSpec(**kw)


class TestParseRow:
    def test_depth1_direct_mapping(self):
        s = parse_orderbook_row("500100,200,500000,300", DEPTH1)
        assert s.asks == (BookLevel(500100, 200),)
        assert s.bids == (BookLevel(500000, 300),)

    def test_locked_book_rejected(self):
        with pytest.raises(DataIntegrityError):
            parse_orderbook_row("500000,200,500000,300", DEPTH1)

    def test_crossed_book_rejected(self):
        with pytest.raises(DataIntegrityError):
            parse_orderbook_row("499900,200,500000,300", DEPTH1)

    def test_wrong_field_count(self):
        with pytest.raises(ParseError, match="line 7"):
            parse_orderbook_row("1,2,3", DEPTH1, line_no=7)

    def test_non_integer_field(self):
        with pytest.raises(ParseError):
            parse_orderbook_row("500100,2.5,500000,300", DEPTH1)

    def test_round_trip_random_rows(self):
        # oracle: parse o serialize must be the identity on valid rows
        rng = np.random.default_rng(42)
        spec = InstrumentSpec()
        for _ in range(200):
            bid = int(rng.integers(100_000, 900_000)) * 100 // 100
            bid -= bid % 100
            spr = int(rng.integers(1, 5)) * 100
            fields = []
            for i in range(spec.depth):
                fields.extend(
                    [
                        bid + spr + 100 * i,
                        int(rng.integers(1, 10_000)),
                        bid - 100 * i,
                        int(rng.integers(1, 10_000)),
                    ]
                )
            line = ",".join(map(str, fields))
            assert serialize_row(parse_orderbook_row(line, spec)) == line


class TestObservables:
    def test_mid_price_formula(self):
        s = make_snapshot(best_ask=500100, best_bid=500000)
        assert mid_price(s) == pytest.approx(50.005)

    def test_mid_is_bid_plus_half_tick_at_unit_spread(self):
        s = make_snapshot(best_ask=123_456_00 + 100, best_bid=123_456_00)
        assert mid_price(s) == pytest.approx(123_456_00 / 10_000 + 0.005)

    def test_mid_between_bid_and_ask_random_books(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            bid = int(rng.integers(1_000, 1_000_000))
            ask = bid + int(rng.integers(1, 50)) * 100
            s = BookSnapshot(asks=(BookLevel(ask, 1),), bids=(BookLevel(bid, 1),))
            m = mid_price(s) * 10_000
            assert bid < m < ask

    @pytest.mark.parametrize("ask,bid,expected", [(500100, 500000, 1), (500500, 500000, 5)])
    def test_spread_ticks(self, ask, bid, expected):
        s = make_snapshot(best_ask=ask, best_bid=bid)
        assert spread(s) == expected

    def test_spread_off_grid_rejected(self):
        s = BookSnapshot(asks=(BookLevel(500150, 1),), bids=(BookLevel(500000, 1),))
        with pytest.raises(DataIntegrityError):
            spread(s)

    def test_synthetic_day_spreads_at_least_one(self):
        day, _ = generate_day(SynthConfig(seed=3, n_ticks=2_000))
        assert np.all(day.spreads() >= 1)


class TestTradingDay:
    def test_snapshot_accessor(self):
        day, _ = generate_day(SynthConfig(seed=1, n_ticks=50))
        s = day.snapshot(10)
        assert s.tick_index == 10
        assert s.best_ask.price == day.best_asks[10]
        assert mid_price(s) == pytest.approx(day.mids()[10])

    def test_crossed_rows_rejected_with_row_index(self):
        rows = np.array(
            [[500100, 10, 500000, 10], [500000, 10, 500000, 10]], dtype=np.int64
        )
        with pytest.raises(DataIntegrityError, match="row 1"):
            day_from_rows(rows, day_id="bad")

    def test_arrays_immutable(self):
        day, _ = generate_day(SynthConfig(seed=1, n_ticks=20))
        with pytest.raises(ValueError):
            day.ask_prices[0, 0] = 1


class TestLoadDay:
    def _write(self, tmp_path, n_rows, depth=1):
        p = tmp_path / "X_2019-06-03_orderbook_10.csv"
        lines = []
        for i in range(n_rows):
            lines.append(f"{500100 + 100 * i},10,{500000 + 100 * i},10")
        p.write_text("\n".join(lines) + "\n")
        return p

    def test_trim_counts(self, tmp_path):
        p = self._write(tmp_path, 10)
        day = load_day(p, DEPTH1, trim=2)
        assert len(day) == 6
        # interior preserved in order, first two rows dropped
        assert day.best_asks[0] == 500100 + 200
        assert np.all(np.diff(day.best_asks) == 100)

    def test_too_short_day(self, tmp_path):
        p = self._write(tmp_path, 4)
        with pytest.raises(DataIntegrityError, match="too short"):
            load_day(p, DEPTH1, trim=2)

    def test_day_id_from_filename(self, tmp_path):
        p = self._write(tmp_path, 3)
        assert load_day(p, DEPTH1).day_id == "X_2019-06-03"

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_day(tmp_path / "nope.csv", DEPTH1)

    def test_bad_row_reports_index(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("500100,10,500000,10\n500100,banana,500000,10\n")
        with pytest.raises(ParseError, match="row 1|line 1"):
            load_day(p, DEPTH1)

    def test_synthetic_round_trip_through_csv(self, tmp_path):
        day, truth = generate_day(SynthConfig(seed=11, n_ticks=500))
        p = tmp_path / "S_2020-01-01_orderbook_10.csv"
        write_day_csv(day, p)
        loaded = load_day(p, trim=0)
        assert np.array_equal(loaded.ask_prices, day.ask_prices)
        assert np.array_equal(loaded.bid_volumes, day.bid_volumes)
        assert np.allclose(loaded.mids(), truth.mids)
