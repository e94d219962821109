#pragma once

#include <stdexcept>
#include <string>

namespace icudyn {

// Exit-code classes used by the CLI: 2 usage, 3 data validation, 4 numeric.
enum class ErrorClass { Usage = 2, Data = 3, Numeric = 4 };

// Every failure carries a short machine-parsable tag (E_...) plus human text.
class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string tag, const std::string& message)
        : std::runtime_error(message), cls_(cls), tag_(std::move(tag)) {}

    ErrorClass error_class() const noexcept { return cls_; }
    const std::string& tag() const noexcept { return tag_; }
    int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
    std::string tag_;
};

[[noreturn]] inline void fail_usage(const std::string& tag, const std::string& msg) {
    throw Error(ErrorClass::Usage, tag, msg);
}
[[noreturn]] inline void fail_data(const std::string& tag, const std::string& msg) {
    throw Error(ErrorClass::Data, tag, msg);
}
[[noreturn]] inline void fail_numeric(const std::string& tag, const std::string& msg) {
    throw Error(ErrorClass::Numeric, tag, msg);
}

}  // namespace icudyn
