#pragma once

#include <string>
#include <vector>

namespace otcal {

enum class Instrument {
    EuropeanPut,
    EuropeanCall,
    SpxPut,
    SpxCall,
    VixPut,
    VixCall,
    VixFuture,
    BarrierDIPut,
    BarrierDOPut,
    TerminalPin, // internal constraint, never parsed from files
};

bool instrument_is_option(Instrument t);
bool instrument_is_call(Instrument t);
bool instrument_is_vanilla(Instrument t); // spx/european put or call
std::string instrument_name(Instrument t);
Instrument parse_instrument(const std::string& name);

// One market constraint. strike/barrier are NaN when absent (futures carry no
// strike; only barrier instruments carry a barrier level). Prices are forward
// prices: rates and dividends are zero throughout.
struct MarketQuote {
    Instrument instrument = Instrument::EuropeanPut;
    double maturity = 0.0;
    double strike = 0.0;
    double price = 0.0;
    double barrier = 0.0;

    std::string label() const;
};

// CSV with header instrument,maturity,strike,price,barrier. Empty cells for
// absent strike/barrier. Throws std::invalid_argument naming the offending
// row on malformed or inconsistent input (unknown instrument, non-positive
// maturity, negative price, duplicate (instrument, maturity, strike) keys).
std::vector<MarketQuote> load_quotes(const std::string& path);
void save_quotes(const std::string& path, const std::vector<MarketQuote>& quotes);

// Undiscounted Black price on forward f, strike k, total stddev sigma*sqrt(t).
// sigma = 0 returns intrinsic value.
double bs_price(double forward, double strike, double sigma, double maturity, bool is_call);

// Bisection on sigma in [1e-6, 5] until the price is reproduced to 1e-10.
// Throws InversionError when the price violates static no-arbitrage bounds.
double implied_vol(double forward, double strike, double price, double maturity, bool is_call);

double norm_cdf(double x);

// Fixed-format float for CSV output: 17 significant digits, round-trip exact.
std::string format_float(double v);

} // namespace otcal
