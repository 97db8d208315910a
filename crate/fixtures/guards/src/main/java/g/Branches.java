package g;

public class Branches {

    public void simple(int x) {
        if (x > 0) throw new IllegalStateException("positive");
    }

    public void elseBranch(int x) {
        if (x > 2) {
            return;
        } else {
            throw new IllegalArgumentException("small");
        }
    }

    public void elseIf(int x) {
        if (x < 0) {
            return;
        } else if (x % 3 == 0) {
            throw new IllegalArgumentException("multiple of three");
        }
    }

    public void both(boolean flag, int x) {
        if (flag && x > 1) {
            throw new IllegalStateException();
        }
    }

    public void text(String s) {
        if (s.isEmpty()) {
            throw new IllegalArgumentException("empty");
        }
    }
}
