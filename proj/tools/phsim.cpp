#include <phsim/cli.hpp>

int main(int argc, char** argv) { return phsim::cli::dispatch(argc, argv); }
