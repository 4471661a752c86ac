#include "markovlab/cli.hpp"

int main(int argc, char** argv) { return markovlab::run_cli(argc, argv); }
