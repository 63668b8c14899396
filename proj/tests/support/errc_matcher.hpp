#pragma once

// Catch2 matcher asserting which Errc an Error carries.

#include <catch2/catch_amalgamated.hpp>

#include "pkghall/error.hpp"

namespace testsupport {

class ErrcMatcherImpl : public Catch::Matchers::MatcherBase<pkghall::Error> {
public:
    explicit ErrcMatcherImpl(pkghall::Errc want) : want_(want) {}

    bool match(const pkghall::Error& e) const override { return e.code() == want_; }

    std::string describe() const override {
        return std::string("has code ") + pkghall::errc_name(want_);
    }

private:
    pkghall::Errc want_;
};

inline ErrcMatcherImpl ErrcMatcher(pkghall::Errc want) { return ErrcMatcherImpl(want); }

} // namespace testsupport
