#include "otcal/market_io.hpp"
#include "otcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace otcal {

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();

struct InstrumentRow {
    Instrument id;
    const char* name;
    bool option;
    bool call;
    bool vanilla;
};
const InstrumentRow kInstruments[] = {
    {Instrument::EuropeanPut, "european_put", true, false, true},
    {Instrument::EuropeanCall, "european_call", true, true, true},
    {Instrument::SpxPut, "spx_put", true, false, true},
    {Instrument::SpxCall, "spx_call", true, true, true},
    {Instrument::VixPut, "vix_put", true, false, false},
    {Instrument::VixCall, "vix_call", true, true, false},
    {Instrument::VixFuture, "vix_future", false, false, false},
    {Instrument::BarrierDIPut, "barrier_di_put", true, false, false},
    {Instrument::BarrierDOPut, "barrier_do_put", true, false, false},
    {Instrument::TerminalPin, "terminal_pin", false, false, false},
};

const InstrumentRow& row_of(Instrument t) {
    for (const auto& r : kInstruments)
        if (r.id == t) return r;
    throw std::invalid_argument("unknown instrument id");
}
} // namespace

bool instrument_is_option(Instrument t) { return row_of(t).option; }
bool instrument_is_call(Instrument t) { return row_of(t).call; }
bool instrument_is_vanilla(Instrument t) { return row_of(t).vanilla; }
std::string instrument_name(Instrument t) { return row_of(t).name; }

Instrument parse_instrument(const std::string& name) {
    for (const auto& r : kInstruments)
        if (name == r.name && r.id != Instrument::TerminalPin) return r.id;
    throw std::invalid_argument("unknown instrument '" + name + "'");
}

std::string MarketQuote::label() const {
    std::ostringstream os;
    os << instrument_name(instrument) << " T=" << maturity;
    if (!std::isnan(strike)) os << " K=" << strike;
    if (!std::isnan(barrier)) os << " B=" << barrier;
    return os.str();
}

namespace {
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& s, bool allow_empty, const char* what, int line_no) {
    if (s.empty()) {
        if (allow_empty) return kNaN;
        throw std::invalid_argument(std::string("quotes row ") + std::to_string(line_no) +
                                    ": missing " + what);
    }
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("quotes row ") + std::to_string(line_no) +
                                    ": bad " + what + " '" + s + "'");
    }
    if (pos != s.size())
        throw std::invalid_argument(std::string("quotes row ") + std::to_string(line_no) +
                                    ": bad " + what + " '" + s + "'");
    return v;
}
} // namespace

std::vector<MarketQuote> load_quotes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open quotes file '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("quotes file '" + path + "' is empty");
    {
        auto hdr = split_csv(line);
        if (hdr.size() < 4 || hdr[0] != "instrument" || hdr[1] != "maturity" ||
            hdr[2] != "strike" || hdr[3] != "price")
            throw std::invalid_argument("quotes file '" + path +
                                        "': expected header instrument,maturity,strike,price[,barrier]");
    }
    std::vector<MarketQuote> out;
    std::map<std::tuple<int, double, double>, int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv(line);
        if (cells.size() < 4)
            throw std::invalid_argument("quotes row " + std::to_string(line_no) + ": too few columns");
        MarketQuote q;
        q.instrument = parse_instrument(cells[0]);
        q.maturity = parse_cell(cells[1], false, "maturity", line_no);
        q.strike = parse_cell(cells[2], true, "strike", line_no);
        q.price = parse_cell(cells[3], false, "price", line_no);
        q.barrier = cells.size() > 4 ? parse_cell(cells[4], true, "barrier", line_no) : kNaN;

        if (!(q.maturity > 0.0))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": maturity must be positive");
        if (!(q.price >= 0.0) || !std::isfinite(q.price))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": price must be finite and non-negative");
        const bool needs_strike = instrument_is_option(q.instrument);
        if (needs_strike && (!std::isfinite(q.strike) || !(q.strike > 0.0)))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": option requires a positive strike");
        if (!needs_strike && std::isfinite(q.strike))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": futures carry no strike");
        const bool barrier_instr = q.instrument == Instrument::BarrierDIPut ||
                                   q.instrument == Instrument::BarrierDOPut;
        if (barrier_instr && !std::isfinite(q.barrier))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": barrier instrument requires a barrier level");
        if (!barrier_instr && std::isfinite(q.barrier))
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": barrier level on a non-barrier instrument");

        auto key = std::make_tuple(static_cast<int>(q.instrument), q.maturity,
                                   std::isnan(q.strike) ? -1.0 : q.strike);
        auto [it, fresh] = seen.emplace(key, line_no);
        if (!fresh)
            throw std::invalid_argument("quotes row " + std::to_string(line_no) +
                                        ": duplicate of row " + std::to_string(it->second));
        out.push_back(q);
    }
    return out;
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void save_quotes(const std::string& path, const std::vector<MarketQuote>& quotes) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write quotes file '" + path + "'");
    out << "instrument,maturity,strike,price,barrier\n";
    for (const auto& q : quotes) {
        out << instrument_name(q.instrument) << ',' << format_float(q.maturity) << ',';
        if (!std::isnan(q.strike)) out << format_float(q.strike);
        out << ',' << format_float(q.price) << ',';
        if (!std::isnan(q.barrier)) out << format_float(q.barrier);
        out << '\n';
    }
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bs_price(double forward, double strike, double sigma, double maturity, bool is_call) {
    if (!(forward > 0.0) || !(strike > 0.0))
        throw std::invalid_argument("bs_price: forward and strike must be positive");
    if (!(maturity > 0.0)) throw std::invalid_argument("bs_price: maturity must be positive");
    if (sigma < 0.0) throw std::invalid_argument("bs_price: negative volatility");
    const double intrinsic = is_call ? std::max(forward - strike, 0.0)
                                     : std::max(strike - forward, 0.0);
    if (sigma == 0.0) return intrinsic;
    const double sd = sigma * std::sqrt(maturity);
    const double d1 = std::log(forward / strike) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    if (is_call) return forward * norm_cdf(d1) - strike * norm_cdf(d2);
    return strike * norm_cdf(-d2) - forward * norm_cdf(-d1);
}

double implied_vol(double forward, double strike, double price, double maturity, bool is_call) {
    const double intrinsic = is_call ? std::max(forward - strike, 0.0)
                                     : std::max(strike - forward, 0.0);
    const double cap = is_call ? forward : strike;
    if (!(price >= intrinsic - 1e-14) || !(price <= cap + 1e-14))
        throw InversionError("implied_vol: price outside no-arbitrage bounds");
    double lo = 1e-6, hi = 5.0;
    const double p_lo = bs_price(forward, strike, lo, maturity, is_call);
    const double p_hi = bs_price(forward, strike, hi, maturity, is_call);
    if (price <= p_lo) return lo;
    if (price >= p_hi) throw InversionError("implied_vol: price above vol bracket");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double pm = bs_price(forward, strike, mid, maturity, is_call);
        if (std::abs(pm - price) <= 1e-10) return mid;
        if (pm < price) lo = mid; else hi = mid;
        if (hi - lo <= 1e-16) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace otcal
