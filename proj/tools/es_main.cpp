#include "onefifth/cli.hpp"

int main(int argc, char** argv) { return onefifth::cli::parse_and_dispatch(argc, argv); }
