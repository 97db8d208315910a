package bank;

import java.util.ArrayList;
import java.util.List;

public class Ledger {
    private final List<Integer> entries = new ArrayList<>();

    public void post(int cents) {
        int scaled = cents * 2;
        if (scaled > 1000) {
            throw new UnsupportedOperationException("entry too large");
        }
        entries.add(cents);
    }

    public int size() {
        return entries.size();
    }
}
